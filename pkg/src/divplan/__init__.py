"""divplan: diverse candidate paths, rendered for a vision-language judge to pick from."""

__version__ = "0.1.0"
