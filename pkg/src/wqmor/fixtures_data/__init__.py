"""Bundled network JSON files (generated by scripts/gen_fixtures.py)."""
