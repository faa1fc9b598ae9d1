# commands/__init__.py