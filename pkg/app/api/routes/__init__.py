"""Route exports."""

from app.api.routes import retrieval, scenarios

__all__ = ["retrieval", "scenarios"]
