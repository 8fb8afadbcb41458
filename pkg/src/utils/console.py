"""
Console output helpers for command summaries
"""
from typing import Any

from colorama import Fore, Style, init

init(autoreset=True)

RULE = "────────────────────────────────────"


def section(title: str) -> None:
    """Print a boxed section header"""
    print(f"\n  {RULE}")
    print(f"  {Fore.CYAN}{Style.BRIGHT}{title}{Style.RESET_ALL}")
    print(f"  {RULE}")


def status(ok: bool, text: str) -> str:
    """Colour a pass/fail line"""
    mark = f"{Fore.GREEN}✓" if ok else f"{Fore.RED}✗"
    return f"{mark} {text}{Style.RESET_ALL}"


def fmt(value: Any, digits: int = 4) -> str:
    """Format floats compactly, pass everything else through"""
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    if value is None:
        return "-"
    return str(value)
