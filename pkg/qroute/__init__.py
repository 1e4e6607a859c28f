"""Message complexity of distributed graph algorithms in the quantum routing model"""

import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
