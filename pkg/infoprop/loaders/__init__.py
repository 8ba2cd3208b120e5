"""Scenario ingestion and output emission."""
