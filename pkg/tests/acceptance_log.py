"""Shared record of acceptance outcomes, printed once at the end of the session."""

RESULTS: dict[str, tuple[bool, str]] = {}


def record(key: str, ok: bool, detail: str) -> bool:
    RESULTS[key] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}", flush=True)
    return bool(ok)
