# Campaign-scale acceptance checks. They take minutes and are deselected by
# default; run them with ``pytest -m slow tests/integration/``.
