"""Exact state-vector toolkit for measurement records and forbidden initial states."""
