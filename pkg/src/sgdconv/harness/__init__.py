"""Simulation studies, baselines and benchmark ingestion."""
