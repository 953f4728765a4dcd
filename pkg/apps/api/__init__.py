# FastAPI scoring service
