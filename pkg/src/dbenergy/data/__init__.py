"""Bundled data assets: processor TDP table and the sample datasets."""
