# Configuration file for the Sphinx documentation builder.
#
# This file only contains a selection of the most common options. For a full
# list see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Path setup --------------------------------------------------------------

import os
import sys
import datetime
sys.path.insert(0, os.path.abspath('..'))

from pfpt import __version__

# -- Project information -----------------------------------------------------

project = 'pfpt'
release = __version__

# -- General configuration ---------------------------------------------------

extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.autosummary',
              'sphinx.ext.mathjax',
              'sphinx.ext.doctest',
              'sphinx.ext.viewcode',
              "sphinx.ext.intersphinx",
              'm2r2',
]

autoclass_content = 'both'

# intersphinx configuration
intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/reference", None),
    "sklearn": ("http://scikit-learn.org/stable/", None),
    "h5py": ("https://docs.h5py.org/en/stable/", None),
}

## Generate autodoc stubs with summaries from code
autosummary_generate = True

## Include Python objects as they appear in source files
autodoc_member_order = 'bysource'

## Default flags used by autodoc directives
autodoc_default_options = {'members': True}

templates_path = ['_templates']
source_suffix = ['.rst', '.md']
# The encoding of source files.
source_encoding = 'utf-8-sig'
master_doc = 'index'

year = datetime.date.today().year
copyright = '{}, the pfpt developers'.format(year)

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store', 'configs']

# -- Options for HTML output -------------------------------------------------

html_last_updated_fmt = '%b %d, %Y'
html_title = 'pfpt'
html_short_title = 'pfpt'
pygments_style = 'default'
add_function_parentheses = False

html_show_sourcelink = True
html_theme = "sphinx_rtd_theme"
html_theme_options = {
    'display_version': True,
}
