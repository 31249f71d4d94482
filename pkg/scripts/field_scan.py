"""Budgeted campaign at every field of the bundled scenario table.

Thin wrapper over ``evaptwin scan-field``; extra arguments are passed on,
e.g. ``--budget 20`` or ``--config my.yaml``.

    python scripts/field_scan.py --out runs/scan --budget 30
"""

import sys

from evaptwin.cli import main
from evaptwin.feshbach import load_builtin


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    fields = [f"{b:g}" for b in load_builtin().table_fields]
    return main(["scan-field", "--fields", *fields, *argv])


if __name__ == "__main__":
    sys.exit(run())
