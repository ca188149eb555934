# -*- coding: utf-8 -*-
#
# Sphinx configuration for the guidancelab docs.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

# -- Project information -----------------------------------------------------

project = u'guidancelab'
copyright = u'2026, guidancelab contributors'
author = u'guidancelab contributors'

version_file = '../guidancelab/__init__.py'
with open(version_file, 'r') as f:
    exec(compile(f.read(), version_file, 'exec'))
__version__ = locals()['__version__']

version = __version__
release = __version__

# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinxcontrib.napoleon',
    'sphinx.ext.viewcode',
    'sphinx.ext.mathjax',
]

templates_path = ['_templates']
source_suffix = ['.rst']
master_doc = 'index'
language = None
exclude_patterns = [u'_build', 'Thumbs.db', '.DS_Store']
pygments_style = None

# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
htmlhelp_basename = 'guidancelabdoc'

# -- Options for LaTeX / man output ------------------------------------------

latex_elements = {}
latex_documents = [
    (
        master_doc, 'guidancelab.tex', u'guidancelab Documentation', author,
        'manual'
    ),
]
man_pages = [
    (master_doc, 'guidancelab', u'guidancelab Documentation', [author], 1)
]
