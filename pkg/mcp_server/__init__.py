"""MCP tool server for the spectral Boltzmann solver."""
