"""Graph-based retrieval-augmented generation for small language models."""

from minirag.config import AppConfig, GatewayConfig
from minirag.graph import HeteroGraph
from minirag.pipeline import Index, QueryEngine

__all__ = ["AppConfig", "GatewayConfig", "HeteroGraph", "Index", "QueryEngine"]
__version__ = "0.1.0"
