import logging

from fastapi import FastAPI

from bbavector.api.routes import router
from bbavector.config.config import settings

logging.basicConfig(level=settings.LOG_LEVEL.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")

app = FastAPI(title="BBAVector Geometry API")

app.include_router(router)
