"""Tests for the Eiger-PORT+ simulator and checker."""
