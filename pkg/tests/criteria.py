"""Registry for acceptance-criterion results, printed in the run summary."""

LINES = []


def record(num, ok, desc) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {desc}"
    LINES.append(line)
    return line
