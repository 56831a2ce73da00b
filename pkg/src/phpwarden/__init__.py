"""phpwarden: static vulnerability scanning and learned-behavior runtime
enforcement for PHP web applications."""

__version__ = "0.1.0"
