"""Desk-scale lab for agentic cold-outreach campaigns: sequencing engine,
pluggable model gateway, recipient simulator, HITL curation, and the full
evaluation metric suite."""

__version__ = "0.1.0"
