
"""Core application modules"""
