"""Pytest configuration and fixtures for MCP server tests."""

import os
import sys

# Add project root to path to import our mcp_server module
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "..", "mcp_server"))

import pytest
from fastmcp.client import Client as FastMCPClient


@pytest.fixture
async def mcp_client(table4):
    """Client wrapping the FastMCP server in memory.

    The session-wide N = 4 table is seeded into the server cache after the lifespan has
    started, so tools asking for s = 0.5, N = 4 never rebuild it.
    """
    import server

    async with FastMCPClient(transport=server.mcp) as client:
        server.table_cache[(0.5, 1.0, 4)] = table4
        yield client
