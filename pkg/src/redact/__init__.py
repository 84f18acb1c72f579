"""eFPGA redaction workbench: fabric generation, mapping and SAT-attack evaluation."""

__version__ = "0.1.0"
