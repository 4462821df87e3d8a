"""Entry point for python -m genfric."""

from genfric.cli import app

if __name__ == "__main__":
    app()
