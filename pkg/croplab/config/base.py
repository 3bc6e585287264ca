from dotenv import load_dotenv
import os
import logging
from typing import Dict, Any


class Config:
    """Central environment configuration for croplab."""

    def __init__(self):
        """Initialize configuration from environment variables (and an optional .env file)."""
        load_dotenv()
        self._initialize_logging()

    def _initialize_logging(self):
        """Set up basic logging configuration."""
        logging.basicConfig(
            level=self.logging['level'],
            format=self.logging['format']
        )

    @property
    def logging(self) -> Dict[str, Any]:
        """Get logging configuration."""
        return {
            'level': os.getenv('CROPLAB_LOG_LEVEL', 'INFO').upper(),
            'format': os.getenv(
                'CROPLAB_LOG_FORMAT',
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            )
        }

    @property
    def runtime(self) -> Dict[str, Any]:
        """Get worker-pool configuration."""
        return {
            'workers': max(1, int(os.getenv('CROPLAB_WORKERS', '1')))
        }

    @property
    def output(self) -> Dict[str, str]:
        """Get output configuration."""
        return {
            'dir': os.getenv('CROPLAB_OUTPUT_DIR', 'runs'),
            'checkpoint_name': os.getenv('CROPLAB_CHECKPOINT_NAME', 'model.ckpt'),
            'manifest_name': 'run_manifest.json'
        }
