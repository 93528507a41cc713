"""Task domains: scene construction and planning problems."""
