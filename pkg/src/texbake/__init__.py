"""Texture baking from orbit views."""
