"""Deterministic scripted stand-in for a chat-completions endpoint."""

from thinkswitch.mock.script import FixtureError, Script, ScriptEntry, script_from_dicts, script_from_fixture, shipped_fixture
from thinkswitch.mock.server import MockServer, serve

__all__ = [
    "FixtureError",
    "MockServer",
    "Script",
    "ScriptEntry",
    "script_from_dicts",
    "script_from_fixture",
    "serve",
    "shipped_fixture",
]
