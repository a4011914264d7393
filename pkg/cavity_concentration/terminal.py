#!/usr/bin/env python3
"""
Cross-platform terminal helpers for the human-readable summaries
Works on Windows, macOS, Linux, and WSL
"""

import os
import platform
import sys

# Platform detection
def is_wsl():
    """Detect if running in WSL"""
    try:
        with open('/proc/version', 'r') as f:
            return 'microsoft' in f.read().lower()
    except OSError:
        return False

IS_WINDOWS = platform.system() == 'Windows'
IS_WSL = is_wsl()

# Colors
GREEN = '\033[92m'
RED = '\033[91m'
YELLOW = '\033[93m'
DIM = '\033[2m'
RESET = '\033[0m'

VERDICT_COLORS = {
    'PASS': GREEN,
    'FAIL': RED,
    'INFO': YELLOW,
    'N/A': DIM,
}

_ansi_enabled = False

def enable_ansi_colors():
    """Enable ANSI escape sequences on Windows 10+ consoles"""
    global _ansi_enabled
    if _ansi_enabled:
        return
    if IS_WINDOWS:
        try:
            import ctypes
            kernel32 = ctypes.windll.kernel32
            kernel32.SetConsoleMode(kernel32.GetStdHandle(-11), 7)
        except (AttributeError, OSError):
            os.system('color')
    _ansi_enabled = True

def supports_color(stream=None):
    """True when stream is an interactive terminal"""
    stream = stream if stream is not None else sys.stderr
    try:
        return stream.isatty()
    except (AttributeError, ValueError):
        return False

def paint(text, color, enabled=True):
    """Wrap text in an ANSI color when enabled"""
    if not enabled or not color:
        return text
    return f"{color}{text}{RESET}"

def flush_output(stream=None):
    """Force flush so summaries are not interleaved with reports"""
    try:
        (stream if stream is not None else sys.stdout).flush()
    except (AttributeError, ValueError, OSError):
        pass

def rule(width, fancy=True):
    """Horizontal rule; plain ASCII for WSL or non-interactive output"""
    char = '─' if fancy and not IS_WSL else '-'
    return char * width
