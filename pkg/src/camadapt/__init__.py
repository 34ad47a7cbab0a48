"""Re-synthesize test-time camera views at a policy's training viewpoints."""

__version__ = "0.1.0"
