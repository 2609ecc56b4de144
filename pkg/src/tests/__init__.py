"""
Test package for QSD Forge.
"""
