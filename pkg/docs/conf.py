"""Sphinx configuration for the mflsi documentation."""

import os
import sys


sys.path.insert(0, os.path.abspath("../src"))

# -- Project information -----------------------------------------------------
project = "mflsi"
copyright = "2026, mflsi developers"
author = "mflsi developers"
release = "0.1.0"
version = "0.1.0"

# -- General configuration ---------------------------------------------------
extensions = ["sphinx.ext.autodoc", "sphinx.ext.viewcode", "sphinx.ext.napoleon", "sphinx.ext.intersphinx", "sphinx.ext.mathjax"]

exclude_patterns = ["_build"]
language = "en"

# -- HTML output -------------------------------------------------------------
html_theme = "sphinx_rtd_theme"
html_theme_options = {"navigation_depth": 3, "collapse_navigation": False, "prev_next_buttons_location": "bottom"}

# -- Extensions --------------------------------------------------------------
# Docstrings are google style; unicode math (ρ, Γ₂, ∇²) is left as text.
napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_use_param = True
napoleon_use_rtype = True

autodoc_default_options = {"members": True, "member-order": "bysource", "undoc-members": True, "exclude-members": "__weakref__"}
autodoc_typehints = "description"

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}
