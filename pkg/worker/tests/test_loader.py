import pytest

from leap_worker.loader import LoadError, load_funcs

GRAD = '''
"""Gradient lab functions."""


def _f(x, y):  # hidden
    return x * y


def gradient(x, y):
    """Partial derivatives."""
    x, y = float(x), float(y)
    return (y, x)
'''


def write(funcs_dir, name, body):
    funcs_dir.mkdir(parents=True, exist_ok=True)
    (funcs_dir / name).write_text(body)


class TestLoadFuncs:
    def test_underscore_names_hidden(self, tmp_path):
        write(tmp_path / "funcs", "grad.py", GRAD)
        table = load_funcs(tmp_path / "funcs")
        assert sorted(table) == ["gradient"]
        assert table["gradient"].doc == "Partial derivatives."

    def test_param_introspection(self, tmp_path):
        write(tmp_path / "funcs", "sig.py", (
            "def fancy(x, y=2.5, *args, mode='fast', **kw):\n"
            "    return x\n"
            "def typed(n: int) -> int:\n"
            "    return n\n"
        ))
        table = load_funcs(tmp_path / "funcs")
        fancy = table["fancy"].params
        assert fancy == [
            {"name": "x", "kind": "positional"},
            {"name": "y", "kind": "positional", "default": 2.5},
            {"name": "mode", "kind": "keyword", "default": "fast"},
        ]
        assert table["typed"].params == [
            {"name": "n", "kind": "positional", "annotation": "int"}]

    def test_imported_names_not_exposed(self, tmp_path):
        write(tmp_path / "funcs", "uses_math.py",
              "from math import sqrt\n\ndef mine(x):\n    return sqrt(x)\n")
        table = load_funcs(tmp_path / "funcs")
        assert sorted(table) == ["mine"]

    def test_classes_and_constants_not_exposed(self, tmp_path):
        write(tmp_path / "funcs", "mixed.py",
              "LIMIT = 3\n\nclass Thing:\n    pass\n\ndef ok():\n    return LIMIT\n")
        assert sorted(load_funcs(tmp_path / "funcs")) == ["ok"]

    def test_collision_across_files(self, tmp_path):
        write(tmp_path / "funcs", "a.py", "def f():\n    return 1\n")
        write(tmp_path / "funcs", "b.py", "def f():\n    return 2\n")
        with pytest.raises(LoadError) as e:
            load_funcs(tmp_path / "funcs")
        assert e.value.kind == "NameCollision"

    def test_empty_dir(self, tmp_path):
        (tmp_path / "funcs").mkdir()
        assert load_funcs(tmp_path / "funcs") == {}

    def test_import_error_carries_traceback(self, tmp_path):
        write(tmp_path / "funcs", "broken.py", "raise RuntimeError('nope at import')\n")
        with pytest.raises(LoadError) as e:
            load_funcs(tmp_path / "funcs")
        assert e.value.kind == "ImportError"
        assert "nope at import" in e.value.message
        assert "Traceback" in e.value.detail

    def test_files_load_in_sorted_order(self, tmp_path):
        write(tmp_path / "funcs", "b.py", "def later():\n    return 2\n")
        write(tmp_path / "funcs", "a.py", "def earlier():\n    return 1\n")
        table = load_funcs(tmp_path / "funcs")
        assert table["earlier"].source_file == "a.py"
        assert table["later"].source_file == "b.py"
