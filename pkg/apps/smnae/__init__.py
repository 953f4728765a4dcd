# SMNAE kin-verify library package
__version__ = "1.0.0"
