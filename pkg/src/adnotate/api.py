"""HTTP surface over the annotation service (JSON bodies throughout)."""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .corpus import Label
from .errors import (
    ConflictError,
    NotFoundError,
    ParseError,
    UndefinedMetricError,
    ValidationError,
)
from .service import (
    AnnotationService,
    Annotator,
    Expertise,
    Setup,
    SurveyResponse,
)


class CreateProjectRequest(BaseModel):
    annotator_id: str
    expertise: Expertise
    batch_id: str
    setup: Setup
    seed: int = 0


class LabelRequest(BaseModel):
    post_id: str
    label: Label


class SurveyRequest(BaseModel):
    q1_helpful: int
    q2_accurate: int
    q3_agree_freq: int
    q4_confidence: bool
    q5_aspects: list[str] = Field(default_factory=list)
    q5_other_text: str = ""
    q6_understanding: str = ""
    q7_improvements: str = ""


def create_app(service: AnnotationService) -> FastAPI:
    app = FastAPI(title="adnotate", version="0.1.0")

    @app.exception_handler(NotFoundError)
    async def not_found(_request: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.exception_handler(ConflictError)
    async def conflict(_request: Request, exc: ConflictError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(ValidationError)
    async def invalid(_request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ParseError)
    async def unparseable(_request: Request, exc: ParseError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(UndefinedMetricError)
    async def undefined(_request: Request, exc: UndefinedMetricError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.post("/projects", status_code=201)
    def create_project(body: CreateProjectRequest):
        project = service.create_project(
            Annotator(body.annotator_id, body.expertise),
            body.batch_id, body.setup, body.seed,
        )
        return {
            "project_id": project.project_id,
            "annotator_id": project.annotator_id,
            "setup": project.setup.value,
            "batch_id": project.batch_id,
            "total": len(project.item_order),
            "created_at": project.created_at,
        }

    @app.get("/projects/{project_id}/next")
    def next_item(project_id: str):
        view = service.next_item(project_id)
        if view is None:
            project = service.projects[project_id]
            return {
                "done": True,
                "survey_required": (
                    project.setup is Setup.WITH_EXPLANATIONS
                    and project_id not in service.surveys
                ),
            }
        return {
            "done": False,
            "item": {
                "post_id": view.post_id,
                "caption": view.caption,
                "explanation_block": view.explanation_block,
                "position": view.position,
                "total": view.total,
            },
        }

    @app.post("/projects/{project_id}/labels")
    def submit_label(project_id: str, body: LabelRequest):
        service.submit_label(project_id, body.post_id, body.label)
        return {"ok": True, "progress": service.progress(project_id)}

    @app.get("/projects/{project_id}/attention")
    def attention(project_id: str):
        report = service.attention_report(project_id)
        return {
            "disclosed_seen": report.disclosed_seen,
            "disclosed_correct": report.disclosed_correct,
            "accuracy": report.accuracy,
        }

    @app.post("/projects/{project_id}/survey", status_code=201)
    def submit_survey(project_id: str, body: SurveyRequest):
        service.submit_survey(project_id, SurveyResponse(
            q1_helpful=body.q1_helpful,
            q2_accurate=body.q2_accurate,
            q3_agree_freq=body.q3_agree_freq,
            q4_confidence=body.q4_confidence,
            q5_aspects=tuple(body.q5_aspects),
            q5_other_text=body.q5_other_text,
            q6_understanding=body.q6_understanding,
            q7_improvements=body.q7_improvements,
        ))
        return {"ok": True}

    @app.get("/batches/{batch_id}/export")
    def export(batch_id: str, expertise: Expertise | None = None,
               setup: Setup | None = None):
        labels_csv, manifest = service.export_labels(
            batch_id, expertise=expertise, setup=setup
        )
        return {"labels_csv": labels_csv, "manifest": manifest}

    @app.get("/reports/agreement")
    def agreement_report(batch: str):
        return service.agreement_report(batch).to_dict()

    return app
