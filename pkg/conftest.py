"""Test session setup: the project root goes on sys.path so ``config`` and ``prosthesis`` import uninstalled."""
import logging
import os
import sys

ROOT = os.path.dirname(os.path.abspath(__file__))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)


def pytest_configure(config):
    # tests drive controllers into fallbacks and guards into grazing on purpose
    logging.getLogger("prosthesis").setLevel(logging.ERROR)
