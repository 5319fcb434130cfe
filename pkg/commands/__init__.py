# commands/__init__.py
# -*- coding: utf-8 -*-
"""Subcommand modules; grtool loads every module here that exposes setup(subparsers)."""
