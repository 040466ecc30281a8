"""Island-model evolutionary search over programs with LLM variation operators."""

__version__ = "0.1.0"
