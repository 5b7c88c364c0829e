# Sphinx configuration for the hardness-bench documentation.
#
# Build with: sphinx-build -b html docs/source docs/build

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(ROOT))

from hardness_bench.const import VERSION  # noqa: E402

# -- Project information -----------------------------------------------------

project = "hardness-bench"
copyright = "2026, hardness-bench contributors"
author = "hardness-bench contributors"
version = VERSION
release = VERSION

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx.ext.viewcode",
    "sphinx_rtd_theme",
    "myst_parser",
]

source_suffix = {".rst": "restructuredtext", ".md": "markdown"}
exclude_patterns = []

autodoc_mock_imports = ["matplotlib", "scipy", "sklearn", "pandas", "cleanlab", "voluptuous", "dotenv"]
autodoc_default_options = {
    "members": True,
    "member-order": "bysource",
    "undoc-members": False,
    "exclude-members": "__init__",
}
autodoc_typehints = "description"
autodoc_class_signature = "separated"

napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_use_rtype = False

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
html_title = f"hardness-bench {VERSION}"
html_theme_options = {"navigation_depth": 3, "collapse_navigation": False}
