"""Entry point for running as python -m qelm."""

from qelm.cli import app

if __name__ == "__main__":
    app()
