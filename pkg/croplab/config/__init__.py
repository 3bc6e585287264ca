from .base import Config

# Create a global config instance
config = Config()

# Export the config instance
__all__ = ['config', 'Config']
