"""Greybox fuzzing harness that flags code-level backdoors with a syscall-based metamorphic oracle."""

__version__ = "0.1.0"
