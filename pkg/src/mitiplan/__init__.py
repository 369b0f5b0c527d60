"""Adversary-aware mitigation planning: CSF maturity -> ATT&CK mitigation plans."""

from importlib.resources import files

__version__ = "0.1.0"

DATA_DIR = files("mitiplan") / "data"
