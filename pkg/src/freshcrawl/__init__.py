"""Freshness-driven crawl scheduling and parallel crawl simulation for social networks."""

__version__ = "0.1.0"
