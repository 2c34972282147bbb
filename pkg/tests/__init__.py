"""
tests package.

Contains unit and integration tests for the project.
"""
