# Pydantic schemas for Prometrix backend