"""Bundled example run configs.

``genfric presets list`` shows them; ``genfric init --preset NAME`` copies one
into a new config file.
"""
