import uvicorn
from dotenv import load_dotenv
import os

env_file = ".env.production" if os.getenv("ENV") == "production" else ".env"
load_dotenv(env_file)

from bbavector.config.config import settings  # noqa: E402

if __name__ == "__main__":
	uvicorn.run(
		"bbavector.main:app",
		host=settings.HOST,
		port=settings.PORT,
		reload=settings.DEBUG
	)
