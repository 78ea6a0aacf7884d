"""Online robust PCA and matrix completion by recursive projected compressive sensing."""
