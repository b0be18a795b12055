//! A static description of the HTTP surface, served at `/openapi.json`.

use serde_json::{json, Value as Json};

fn op(summary: &str, ok: u16, body: Option<&str>) -> Json {
    let mut o = json!({
        "summary": summary,
        "responses": {
            ok.to_string(): { "description": "success" },
            "404": { "$ref": "#/components/responses/Error" },
            "409": { "$ref": "#/components/responses/Error" },
            "422": { "$ref": "#/components/responses/Error" },
            "502": { "$ref": "#/components/responses/Error" }
        }
    });
    if let Some(media) = body {
        o["requestBody"] = json!({ "required": true, "content": { media: {} } });
    }
    o
}

pub fn document() -> Json {
    let j = Some("application/json");
    let paths = json!({
        "/sessions": {
            "post": op("Create a session", 201, None),
            "get": op("List session ids", 200, None)
        },
        "/sessions/{id}": { "delete": op("Delete a session", 200, None) },
        "/sessions/{id}/datasets": { "post": op("Upload a CSV table (?name=, ?tags=)", 201, Some("text/csv")) },
        "/sessions/{id}/sentences": {
            "post": op("Append a sentence at the cursor", 201, j),
            "get": op("Active path, cursor and every live sentence", 200, None)
        },
        "/sessions/{id}/sentences/{sid}": {
            "patch": op("Edit a sentence", 200, j),
            "delete": op("Delete a sentence", 200, None)
        },
        "/sessions/{id}/sentences/{sid}/insert": { "post": op("Insert after a sentence", 201, j) },
        "/sessions/{id}/sentences/{sid}/branch": { "post": op("Fork a new branch below a sentence", 200, None) },
        "/sessions/{id}/sentences/{sid}/show_view": { "post": op("Retrieve and render a view for a sentence", 200, None) },
        "/sessions/{id}/branches/{fork_child}": { "delete": op("Delete a branch", 200, None) },
        "/sessions/{id}/views/{view_id}": { "get": op("Fetch a rendered view", 200, None) },
        "/sessions/{id}/events": { "post": op("Record a dashboard interaction", 201, j) },
        "/sessions/{id}/capture": { "post": op("Suggest a sentence from recent interactions", 200, None) },
        "/sessions/{id}/capture/accept": { "post": op("Accept a capture suggestion", 201, j) },
        "/sessions/{id}/timeline": { "get": op("Timeline nodes", 200, None) },
        "/sessions/{id}/timeline/{node}/restore": { "post": op("State at a timeline node", 200, None) },
        "/sessions/{id}/timeline/{node}/reflections": { "get": op("Reflection questions for a node", 200, None) },
        "/sessions/{id}/inquiry": { "get": op("Issues grouped by status (?status=)", 200, None) },
        "/sessions/{id}/story": { "get": op("Compile the data story (?format=markdown)", 200, None) },
        "/sessions/{id}/snapshot": {
            "get": op("Export the session", 200, None),
            "put": op("Import a session; its log is replayed and checked", 200, j)
        },
        "/openapi.json": { "get": op("This document", 200, None) }
    });
    json!({
        "openapi": "3.0.3",
        "info": { "title": "narrascope", "version": env!("CARGO_PKG_VERSION") },
        "paths": paths,
        "components": {
            "responses": {
                "Error": {
                    "description": "error envelope",
                    "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } }
                }
            },
            "schemas": {
                "Error": {
                    "type": "object",
                    "required": ["error"],
                    "properties": {
                        "error": {
                            "type": "object",
                            "required": ["code", "message"],
                            "properties": { "code": { "type": "string" }, "message": { "type": "string" } }
                        }
                    }
                }
            }
        }
    })
}
