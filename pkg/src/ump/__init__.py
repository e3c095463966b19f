"""Federated simulation process servers and platform.

Model servers host executable simulation processes behind a standard JSON
process API; the platform mirrors any number of servers under namespaced
process IDs, forwards executions, and manages results, access and usage.
"""

__version__ = "0.1.0"
