"""Integration tests for MCP Code Executor."""
