# Configuration file for the Sphinx documentation builder.
#
# This file only contains a selection of the most common options. For a full
# list see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Path setup --------------------------------------------------------------

import os
import re
import sys


PROJECT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
DOCS_SOURCE_DIR = os.path.abspath(os.path.dirname(__file__))
sys.path.insert(0, PROJECT_DIR)


def read_file(*parts):
    with open(os.path.join(PROJECT_DIR, *parts), "r") as f:
        return f.read()


# -- Project information -----------------------------------------------------

project = "blackout"
copyright = "2024, the blackout developers"
author = "the blackout developers"

# The full version, including alpha/beta/rc tags
release = os.environ.get("READTHEDOCS_VERSION", "{{VERSION}}")


# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.viewcode",
]

templates_path = ["_templates"]
exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_static_path = ["_static"]
master_doc = "index"


# -- Validation suite list -----------------------------------------------------

_SUITE_DECORATOR = re.compile(r'^@suite\("([a-z_]+)"')


def get_suite_entries(*file_parts):
    """List the registered validation suites with the first line of their
    docstrings, without importing blackout
    """
    lines = read_file(*file_parts).split("\n")
    res = []
    name = None
    for idx, line in enumerate(lines):
        line = line.strip()
        match = _SUITE_DECORATOR.match(line)
        if match is not None:
            name = match.group(1)
            continue
        if name is not None and line.startswith("def "):
            doc = lines[idx + 1].strip().strip('"')
            res.append(f"  * ``{name}``: {doc}")
            name = None
    return res


suite_text = "\n".join(get_suite_entries("blackout", "suites.py"))

with open(os.path.join(DOCS_SOURCE_DIR, "validation.rst"), "r") as f:
    orig_data = f.read()
new_data = orig_data.replace("BLACKOUT_SUITES", suite_text)
with open(os.path.join(DOCS_SOURCE_DIR, "validation_auto.rst"), "w") as f:
    f.write(new_data)


def run_apidoc(_):
    from sphinx.ext.apidoc import main

    cur_dir = os.path.abspath(os.path.dirname(__file__))
    module = os.path.join(cur_dir, "..", "..", "blackout")
    main(["-e", "-o", os.path.join(cur_dir, "autodoc"), module, "--force"])


def setup(app):
    app.connect("builder-inited", run_apidoc)
