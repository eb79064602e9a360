"""Stage-tagged registration failure."""
from __future__ import annotations


class RegistrationError(RuntimeError):
    """Failure in one pipeline stage; ``stage`` names where it happened."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
