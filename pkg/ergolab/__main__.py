"""Console entry point for `python -m ergolab`."""

from .cli import app


if __name__ == "__main__":  # pragma: no cover
    app()
