"""Two-phase multi-factor authentication for space-air-ground integrated networks.

Phase I is a cryptographic one-shot handshake (identity, location,
password, biometric); Phase II continuously re-authenticates a session
from nine spatial-temporal factors with a random forest.
"""

__version__ = "0.1.0"
