# Sphinx configuration for the spice documentation.
import os
import sys
sys.path.insert(0, os.path.abspath('../../'))

project = 'spice'
copyright = '2026, spice developers'
author = 'spice developers'
release = '0.1.0'

master_doc = 'index'

extensions = [
    'sphinx.ext.intersphinx',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
    'sphinx.ext.mathjax',
    'sphinx.ext.autodoc',
    'sphinx_autodoc_typehints',
    'myst_parser',
    'sphinx_click'
]

intersphinx_mapping = {
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'pandas': ('https://pandas.pydata.org/docs/', None),
}

myst_enable_extensions = [
    "colon_fence",
]

templates_path = ['_templates']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

html_theme = 'furo'
html_static_path = ['_static']
