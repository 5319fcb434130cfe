# genreg/__init__.py
# -*- coding: utf-8 -*-
"""Generative regression: predict a nonnegative scalar by generating value tokens."""

__version__ = "0.1.0"
