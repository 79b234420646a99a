"""Robust transmission expansion planning with storage and binary recourse."""
