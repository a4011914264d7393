"""Tests for the terminal colour helpers."""

import io

from cavity_concentration import terminal


class TestTerminal:

    def test_paint_disabled(self):
        assert terminal.paint("PASS", terminal.GREEN, enabled=False) == "PASS"

    def test_paint_enabled(self):
        assert terminal.paint("FAIL", terminal.RED) == f"{terminal.RED}FAIL{terminal.RESET}"

    def test_every_verdict_has_a_color(self):
        assert set(terminal.VERDICT_COLORS) == {"PASS", "FAIL", "INFO", "N/A"}

    def test_plain_rule(self):
        assert terminal.rule(5, fancy=False) == "-----"

    def test_string_buffers_are_not_terminals(self):
        assert terminal.supports_color(io.StringIO()) is False

    def test_flush_tolerates_closed_streams(self):
        stream = io.StringIO()
        stream.close()
        terminal.flush_output(stream)
