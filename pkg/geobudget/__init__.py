"""
geobudget: adaptive privacy budgeting under Geo-Privacy and Concentrated Geo-Privacy.

Noise mechanisms, privacy filters, the analyst/user protocol engine, iterative
elimination templates and the query applications built on them.
"""

__version__ = "0.1.0"
