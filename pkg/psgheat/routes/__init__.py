from .runs import runs_bp

__all__ = ['runs_bp']
