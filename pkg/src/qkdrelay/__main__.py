"""Module entry point: python -m qkdrelay ..."""
from .cli import run

if __name__ == "__main__":
    run()
