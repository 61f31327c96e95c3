#!/usr/bin/env python3
# Sphinx configuration for the grpolab documentation.
import os
import sys

sys.path.insert(0, os.path.abspath('../..'))

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.napoleon',
    'sphinx.ext.viewcode',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'grpolab'
author = 'grpolab developers'
copyright = '2026, grpolab developers'
version = '0.1'
release = '0.1.0'

exclude_patterns = []
pygments_style = 'sphinx'

# docstrings use "Args:" / "Returns:" / "Raises:" sections
napoleon_google_docstring = True
napoleon_numpy_docstring = False

on_rtd = os.environ.get('READTHEDOCS', None) == 'True'
if not on_rtd:
    import sphinx_rtd_theme
    html_theme = 'sphinx_rtd_theme'
    html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]

html_static_path = ['_static']
htmlhelp_basename = 'grpolabdoc'

man_pages = [
    (master_doc, 'grpolab', 'grpolab Documentation', [author], 1)
]
