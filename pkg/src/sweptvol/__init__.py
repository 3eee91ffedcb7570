"""Implicit swept volumes of locally implicit solids under rigid motion."""
