"""Integration tests for the MCP server following FastMCP patterns."""

import asyncio
import json
import time
from unittest.mock import patch

import pytest
from fastmcp.client import Client as FastMCPClient

TOOLS = {"build_coefficients", "eigenvalues", "solve_cascade", "run_verification"}


def payload(result) -> dict:
    return json.loads(result.content[0].text)


class TestServerSetup:
    """Tool registration and the health route."""

    async def test_list_tools(self, mcp_client: FastMCPClient):
        result = await mcp_client.list_tools()
        assert {tool.name for tool in result} == TOOLS

    async def test_tool_metadata(self, mcp_client: FastMCPClient):
        for tool in await mcp_client.list_tools():
            assert tool.description
            assert tool.inputSchema.get("properties")

    async def test_health(self, mcp_client: FastMCPClient):
        import server

        response = await server.health(None)
        body = json.loads(response.body)
        assert body["status"] == "ok"
        assert body["cached_tables"] >= 1


class TestCoefficientTools:
    async def test_build_uses_cache(self, mcp_client: FastMCPClient, table4, tmp_path):
        out = tmp_path / "table.bspt"
        result = await mcp_client.call_tool(
            name="build_coefficients",
            arguments={"s": 0.5, "n_max_energy": 4, "out_path": str(out)},
        )
        summary = payload(result)
        assert summary["mu_entries"] == len(table4.mu)
        assert all(abs(value) <= 1e-10 for value in summary["null_space"])
        assert len(summary["digest"]) == 64
        assert out.exists()

    async def test_invalid_exponent(self, mcp_client: FastMCPClient):
        result = await mcp_client.call_tool(
            name="build_coefficients", arguments={"s": 1.5, "n_max_energy": 4}
        )
        assert "error" in payload(result)

    async def test_eigenvalues(self, mcp_client: FastMCPClient, table4):
        result = await mcp_client.call_tool(name="eigenvalues", arguments={"s": 0.5, "n_max_energy": 4})
        rows = payload(result)["eigenvalues"]
        assert len(rows) == len(table4.linear)
        by_key = {(row["n"], row["l"]): row["lambda"] for row in rows}
        assert by_key[(2, 0)] == pytest.approx(table4.linear[(2, 0)])

    async def test_eigenvalues_invalid_exponent(self, mcp_client: FastMCPClient):
        result = await mcp_client.call_tool(name="eigenvalues", arguments={"s": 1.5, "n_max_energy": 4})
        assert "error" in payload(result)

    async def test_concurrent_requests_build_once(self, mcp_client: FastMCPClient, table4):
        import server

        calls = []

        def slow_build(*args):
            calls.append(args)
            time.sleep(0.05)
            return table4

        with patch.object(server, "build_table", side_effect=slow_build):
            first, second = await asyncio.gather(
                server.get_table(0.25, 4), server.get_table(0.25, 4)
            )
        assert first is second is table4
        assert len(calls) == 1


class TestSolveCascadeTool:
    async def test_single_mode(self, mcp_client: FastMCPClient, table4):
        result = await mcp_client.call_tool(
            name="solve_cascade",
            arguments={
                "s": 0.5,
                "n_max_energy": 4,
                "init": {"0,2,0": [1e-3, 0.0]},
                "t_end": 1.0,
                "samples": 3,
            },
        )
        solution = payload(result)
        assert solution["times"] == [0.0, 0.5, 1.0]
        re, im = solution["modes"]["0,2,0"][0]
        assert (re, im) == pytest.approx((1e-3, 0.0))
        assert solution["modes"]["0,0,0"] == [[0.0, 0.0]] * 3

    async def test_inadmissible_data(self, mcp_client: FastMCPClient):
        result = await mcp_client.call_tool(
            name="solve_cascade",
            arguments={"s": 0.5, "n_max_energy": 4, "init": {"0,1,0": [1e-3, 0.0]}, "t_end": 1.0},
        )
        assert "collision invariants" in payload(result)["error"]

    async def test_kernel_amplitude_selects_table(self, mcp_client: FastMCPClient, table4):
        import server

        with patch.object(server, "build_table", return_value=table4) as build:
            result = await mcp_client.call_tool(
                name="solve_cascade",
                arguments={
                    "s": 0.5,
                    "n_max_energy": 4,
                    "init": {"0,2,0": [1e-3, 0.0]},
                    "t_end": 0.0,
                    "kappa_beta": 2.0,
                },
            )
        assert payload(result)["times"] == [0.0]
        assert build.call_args.args[1].kappa_beta == 2.0
        assert (0.5, 2.0, 4) in server.table_cache


class TestVerificationTool:
    async def test_selected_suites(self, mcp_client: FastMCPClient):
        result = await mcp_client.call_tool(
            name="run_verification",
            arguments={"s": 0.5, "n_max_energy": 4, "suites": ["eigen-identity", "orthogonality"]},
        )
        verdict = payload(result)
        assert verdict["passed"]
        assert [suite["name"] for suite in verdict["suites"]] == ["eigen-identity", "orthogonality"]

    async def test_unknown_suite(self, mcp_client: FastMCPClient):
        result = await mcp_client.call_tool(
            name="run_verification",
            arguments={"s": 0.5, "n_max_energy": 4, "suites": ["nope"]},
        )
        assert "Unknown" in payload(result)["error"]
