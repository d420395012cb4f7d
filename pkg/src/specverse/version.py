ENGINE_VERSION = "0.1.0"

# Wire protocol revision; see PROTOCOL.md. Bumped only on incompatible changes.
PROTOCOL_VERSION = 1
