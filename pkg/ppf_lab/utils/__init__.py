# Shared helpers (filesystem, hashing, seeding)
