use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use labelqc::critic::Workspace;
use labelqc::review::http::REVIEWER_HEADER;
use labelqc::review::{
    router, FlagReason, ImageSlot, ReviewDraft, ReviewService, ReviewStatus, ReviewStore,
};
use labelqc::verdict::{read_records, Resolution, Verdict};
use labelqc::OrganClass;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    ws: Workspace,
}

fn png(shade: u8) -> Vec<u8> {
    labelqc::projection::RgbImage::new(1, 1, vec![shade; 3])
        .unwrap()
        .to_png()
}

/// Five pair items: liver, spleen, liver, spleen, liver.
fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path()).unwrap();
    for i in 0..5u8 {
        ws.review
            .enqueue(ReviewDraft {
                case_id: format!("case{i}"),
                class: if i % 2 == 0 {
                    OrganClass::Liver
                } else {
                    OrganClass::Spleen
                },
                flag_reason: FlagReason::Inconsistent,
                images: vec![
                    (ImageSlot::Ct, png(i)),
                    (ImageSlot::OverlayA, png(100 + i)),
                    (ImageSlot::OverlayB, png(200 + i)),
                ],
            })
            .unwrap();
    }
    Fixture { _dir: dir, ws }
}

fn app(store: &Arc<ReviewStore>, token: Option<&str>) -> Router {
    router(ReviewService {
        store: store.clone(),
        token: token.map(str::to_string),
    })
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, body)
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap())
}

async fn resolve(app: &Router, id: u64, body: Value) -> (StatusCode, Value) {
    let req = Request::post(format!("/review/items/{id}/resolution"))
        .header("content-type", "application/json")
        .header(REVIEWER_HEADER, "rev-1")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, body) = call(app, req).await;
    (status, serde_json::from_slice(&body).unwrap())
}

fn ids(page: &Value) -> Vec<u64> {
    page["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["id"].as_u64().unwrap())
        .collect()
}

fn override_count(ws: &Workspace) -> usize {
    read_records(ws.verdicts.path())
        .unwrap()
        .iter()
        .filter(|r| matches!(r.verdict, Verdict::Override(_)))
        .count()
}

#[tokio::test]
async fn list_filters_and_pages() {
    let f = fixture();
    let app = app(&f.ws.review, None);
    let (status, all) = get_json(&app, "/review/items").await;
    assert_eq!(status, StatusCode::OK);
    let all_ids = ids(&all);
    assert_eq!(all_ids.len(), 5);
    assert!(all_ids.windows(2).all(|w| w[0] < w[1]));
    assert!(all["next_cursor"].is_null());

    let (_, liver) = get_json(&app, "/review/items?class=liver&status=pending").await;
    assert_eq!(ids(&liver).len(), 3);

    let (_, first) = get_json(&app, "/review/items?limit=2").await;
    assert_eq!(ids(&first), all_ids[..2]);
    let cursor = first["next_cursor"].as_u64().unwrap();
    let (_, second) = get_json(&app, &format!("/review/items?limit=2&cursor={cursor}")).await;
    assert_eq!(ids(&second), all_ids[2..4]);

    let item = &all["items"][0];
    assert_eq!(item["flag_reason"], "inconsistent");
    assert_eq!(item["status"], "pending");
    let id = item["id"].as_u64().unwrap();
    assert_eq!(
        item["image_urls"]["overlay_a"],
        format!("/review/items/{id}/images/overlay_a.png")
    );

    for bad in [
        "/review/items?class=brain",
        "/review/items?status=done",
        "/review/items?limit=x",
        "/review/items?x=1",
    ] {
        let (status, body) = get_json(&app, bad).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert_eq!(body["error"]["code"], "bad_request");
    }
}

#[tokio::test]
async fn items_and_images() {
    let f = fixture();
    let app = app(&f.ws.review, None);
    let id = f.ws.review.find("case1", OrganClass::Spleen).unwrap().id;
    let (status, item) = get_json(&app, &format!("/review/items/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(item["case_id"], "case1");

    let req = Request::get(format!("/review/items/{id}/images/overlay_b.png"))
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(bytes.to_vec(), png(201));

    let (status, body) = get_json(&app, "/review/items/999").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "not_found");
    let (status, _) = get_json(&app, &format!("/review/items/{id}/images/skeleton.png")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get_json(&app, "/review/items/abc").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn resolution_writes_one_override() {
    let f = fixture();
    let app = app(&f.ws.review, None);
    let id = f.ws.review.find("case2", OrganClass::Liver).unwrap().id;

    let (status, item) = resolve(
        &app,
        id,
        json!({"resolution": "second_best", "note": "tip of the right lobe"}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(item["status"], "resolved");
    assert_eq!(item["reviewer"], "rev-1");
    assert_eq!(override_count(&f.ws), 1);
    let o =
        f.ws.verdicts
            .override_for("case2", OrganClass::Liver)
            .unwrap();
    assert_eq!(o.resolution, Resolution::SecondBest);
    assert_eq!(o.review_item, id);
    assert_eq!(o.note, "tip of the right lobe");

    // Same resolution again is accepted without a second record.
    let (status, _) = resolve(
        &app,
        id,
        json!({"resolution": "second_best", "note": "again"}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(override_count(&f.ws), 1);

    let (status, body) = resolve(&app, id, json!({"resolution": "both_bad"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "conflict");
    assert_eq!(body["item"]["resolution"], "second_best");
    assert_eq!(override_count(&f.ws), 1);

    let (_, pending) = get_json(&app, "/review/items?status=pending").await;
    assert_eq!(ids(&pending).len(), 4);
    assert!(!ids(&pending).contains(&id));
    let (_, resolved) = get_json(&app, "/review/items?status=resolved").await;
    assert_eq!(ids(&resolved), [id]);
}

#[tokio::test]
async fn malformed_resolutions_are_rejected() {
    let f = fixture();
    let app = app(&f.ws.review, None);
    let id = f.ws.review.all()[0].id;
    for body in [
        json!({"resolution": "maybe"}),
        json!({"note": "no resolution"}),
        json!({"resolution": "first_best", "extra": 1}),
        json!({"resolution": "first_best", "note": "x".repeat(4001)}),
    ] {
        let (status, reply) = resolve(&app, id, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(reply["error"]["code"], "bad_request");
    }
    let (status, _) = resolve(&app, 999, json!({"resolution": "first_best"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(override_count(&f.ws), 0);
}

#[tokio::test]
async fn bearer_token_is_required_when_configured() {
    let f = fixture();
    let app = app(&f.ws.review, Some("tok"));
    let (status, body) = get_json(&app, "/review/items").await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["error"]["code"], "unauthorized");

    let wrong = Request::get("/review/items")
        .header("authorization", "Bearer nope")
        .body(Body::empty())
        .unwrap();
    assert_eq!(call(&app, wrong).await.0, StatusCode::UNAUTHORIZED);
    let right = Request::get("/review/items")
        .header("authorization", "Bearer tok")
        .body(Body::empty())
        .unwrap();
    assert_eq!(call(&app, right).await.0, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_duplicate_submissions_record_once() {
    let f = fixture();
    let app = app(&f.ws.review, None);
    let id = f.ws.review.all()[3].id;
    let mut tasks = Vec::new();
    for i in 0..16 {
        let app = app.clone();
        let resolution = if i % 2 == 0 {
            "first_best"
        } else {
            "organ_absent"
        };
        tasks.push(tokio::spawn(async move {
            resolve(&app, id, json!({"resolution": resolution})).await.0
        }));
    }
    let mut statuses = Vec::new();
    for t in tasks {
        statuses.push(t.await.unwrap());
    }
    assert_eq!(override_count(&f.ws), 1);
    let winner = f.ws.review.get(id).unwrap().resolution.unwrap();
    let ok = statuses.iter().filter(|s| **s == StatusCode::OK).count();
    let conflicts = statuses
        .iter()
        .filter(|s| **s == StatusCode::CONFLICT)
        .count();
    assert_eq!((ok, conflicts), (8, 8), "winner {winner:?}");
}

#[test]
fn queue_survives_reopening() {
    let f = fixture();
    let id = f.ws.review.all()[1].id;
    f.ws.review
        .submit_review(id, Resolution::BothBad, "", None)
        .unwrap();
    let reopened = Workspace::open(&f.ws.out_dir).unwrap();
    let items = reopened.review.all();
    assert_eq!(items.len(), 5);
    let item = reopened.review.get(id).unwrap();
    assert_eq!(item.status, ReviewStatus::Resolved);
    assert_eq!(item.resolution, Some(Resolution::BothBad));
    assert_eq!(reopened.review.image(id, ImageSlot::Ct).unwrap(), png(1));
    assert_eq!(reopened.verdicts.overrides().len(), 1);
    // New items continue the id sequence.
    let next = reopened
        .review
        .enqueue(ReviewDraft {
            case_id: "late".into(),
            class: OrganClass::Aorta,
            flag_reason: FlagReason::Rejected,
            images: vec![(ImageSlot::Ct, png(7))],
        })
        .unwrap();
    assert!(items.iter().all(|i| i.id < next.id));
}
