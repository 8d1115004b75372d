import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from msr import __version__
from msr.config import get_settings

# Configure logging
settings = get_settings()
logging.basicConfig(level=settings.log_level.upper())
logger = logging.getLogger(__name__)

app = FastAPI(
    title="MSR Scheduler",
    description="API for synthesizing, analyzing and simulating Markovian Service Rate scheduling policies",
    version=__version__,
)

# Import and include msr routes
try:
    from msr.api_routes import router as msr_router
    app.include_router(msr_router)
    logger.info("MSR routes loaded successfully")
except ImportError as e:
    logger.warning(f"Could not load MSR routes: {e}")

# CORS configuration for browser clients
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],  # Configure this for production
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/")
async def root():
    return {"name": "MSR Scheduler", "version": __version__, "status": "running"}


@app.get("/health")
async def health_check():
    return {"status": "healthy", "routes": [r.path for r in app.routes if r.path.startswith("/api/")]}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host=settings.api_host, port=settings.api_port)
