"""Performance analysis of RIS-aided and AF-relay links over FTR fading."""

__version__ = "0.1.0"
