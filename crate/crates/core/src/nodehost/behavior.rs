//! Built-in node behaviors: talker, listener, service_server,
//! service_client, and the fault-injection crasher.
//!
//! Every run loop follows the same shape: absolute deadlines on the worker
//! clock (`next += period`), act only after `sleep_until` grants the slot,
//! and drain once more on stop so nothing already buffered is lost.

use crate::msgspec::{from_yaml, value_to_json, MessageValue};
use crate::participant::{Publisher, ServiceClient, ServiceServer, Subscriber};
use crate::transcript::TranscriptKind;

use super::{NodeCtx, NodeError, NodeRun, NodeSetup, NodeSpec};

const DEFAULT_STRING_TYPE: &str = "std_msgs/String";
const DEFAULT_ADD_TYPE: &str = "example_interfaces/AddTwoInts";
const DEFAULT_TALKER_PAYLOAD: &str = "data: \"Hello World: {n}\"";
const DEFAULT_REQUEST_PAYLOAD: &str = "a: {n}\nb: {n}";

/// Resolve a built-in behavior id; `None` means "not built-in" and the
/// host falls back to its registered custom factories.
pub fn build_builtin(spec: &NodeSpec) -> Result<Option<NodeSetup>, NodeError> {
    Ok(Some(match spec.behavior.as_str() {
        "talker" => talker(spec, false)?,
        "listener" => listener(spec)?,
        "service_server" => service_server(spec)?,
        "service_client" => service_client(spec)?,
        "crasher" => talker(spec, true)?,
        _ => return Ok(None),
    }))
}

fn required_topic(spec: &NodeSpec) -> Result<String, NodeError> {
    spec.topic.clone().ok_or_else(|| NodeError::InvalidSpec {
        node: spec.name.clone(),
        detail: "behavior requires `topic`".to_string(),
    })
}

fn required_service(spec: &NodeSpec) -> Result<String, NodeError> {
    spec.service.clone().ok_or_else(|| NodeError::InvalidSpec {
        node: spec.name.clone(),
        detail: "behavior requires `service`".to_string(),
    })
}

fn period_or(spec: &NodeSpec, default: u64) -> Result<u64, NodeError> {
    let period = spec.period_ms.unwrap_or(default);
    if period == 0 {
        return Err(NodeError::InvalidSpec {
            node: spec.name.clone(),
            detail: "`period_ms` must be greater than 0".to_string(),
        });
    }
    Ok(period)
}

fn add_two_ints_type(spec: &NodeSpec) -> Result<String, NodeError> {
    let type_name = spec.type_name.clone().unwrap_or_else(|| DEFAULT_ADD_TYPE.to_string());
    if type_name != DEFAULT_ADD_TYPE {
        return Err(NodeError::InvalidSpec {
            node: spec.name.clone(),
            detail: format!(
                "built-in service behaviors only support `{DEFAULT_ADD_TYPE}`, got `{type_name}`"
            ),
        });
    }
    Ok(type_name)
}

fn render_template(
    ctx: &NodeCtx,
    type_name: &str,
    template: &str,
    n: u64,
) -> Result<MessageValue, NodeError> {
    let schema = ctx.registry().require(type_name).map_err(|e| NodeError::InvalidSpec {
        node: ctx.name().to_string(),
        detail: e.to_string(),
    })?;
    let text = template.replace("{n}", &n.to_string());
    from_yaml(ctx.registry(), &schema, &text).map_err(|e| NodeError::InvalidSpec {
        node: ctx.name().to_string(),
        detail: format!("payload template does not produce a valid `{type_name}`: {e}"),
    })
}

fn json_of(ctx: &NodeCtx, type_name: &str, value: &MessageValue) -> Result<String, NodeError> {
    let schema = ctx
        .registry()
        .require(type_name)
        .map_err(|e| NodeError::Behavior(e.to_string()))?;
    value_to_json(ctx.registry(), &schema, value).map_err(|e| NodeError::Behavior(e.to_string()))
}

/// Periodic publisher. With `crash` set it panics upon reaching message
/// number `crash_after` (0 disables the fault).
fn talker(spec: &NodeSpec, crash: bool) -> Result<NodeSetup, NodeError> {
    let topic = required_topic(spec)?;
    let type_name = spec.type_name.clone().unwrap_or_else(|| DEFAULT_STRING_TYPE.to_string());
    let period = period_or(spec, if crash { 300 } else { 500 })?;
    let template = spec
        .payload
        .clone()
        .unwrap_or_else(|| DEFAULT_TALKER_PAYLOAD.to_string());
    let count = spec.count;
    let crash_after = if crash { spec.crash_after.unwrap_or(5) } else { 0 };

    Ok(Box::new(move |ctx: &mut NodeCtx| {
        let mut publisher =
            Publisher::create(ctx.conn(), ctx.registry(), &topic, &type_name, ctx.name())?;
        Ok(Box::new(move |ctx: &mut NodeCtx| {
            let mut n: u64 = 0;
            let mut next = ctx.now_ms();
            loop {
                if !ctx.sleep_until(next) {
                    return Ok(());
                }
                n += 1;
                if crash_after != 0 && n >= crash_after {
                    panic!("injected fault: message {n}");
                }
                let value = render_template(ctx, &type_name, &template, n)?;
                publisher.publish(&value)?;
                ctx.log(TranscriptKind::Pub, &topic, &json_of(ctx, &type_name, &value)?);
                if count.is_some_and(|limit| n >= limit) {
                    return Ok(());
                }
                next += period;
            }
        }) as NodeRun)
    }))
}

/// Polling subscriber; drains everything pending each wake and once more
/// on stop.
fn listener(spec: &NodeSpec) -> Result<NodeSetup, NodeError> {
    let topic = required_topic(spec)?;
    let type_name = spec.type_name.clone().unwrap_or_else(|| DEFAULT_STRING_TYPE.to_string());
    let period = period_or(spec, 100)?;

    Ok(Box::new(move |ctx: &mut NodeCtx| {
        let mut subscriber =
            Subscriber::create(ctx.conn(), ctx.registry(), &topic, &type_name, ctx.name())?;
        Ok(Box::new(move |ctx: &mut NodeCtx| {
            let mut next = ctx.now_ms();
            loop {
                let alive = ctx.sleep_until(next);
                while let Some(value) = subscriber.get_message()? {
                    ctx.log(TranscriptKind::Recv, &topic, &json_of(ctx, &type_name, &value)?);
                }
                if !alive {
                    return Ok(());
                }
                next += period;
            }
        }) as NodeRun)
    }))
}

/// add_two_ints server: answers `sum = a + b` for every pending request.
fn service_server(spec: &NodeSpec) -> Result<NodeSetup, NodeError> {
    let service = required_service(spec)?;
    let type_name = add_two_ints_type(spec)?;
    let period = period_or(spec, 50)?;
    let request_type = format!("{type_name}_Request");
    let response_type = format!("{type_name}_Response");

    Ok(Box::new(move |ctx: &mut NodeCtx| {
        let mut server =
            ServiceServer::create(ctx.conn(), ctx.registry(), &service, &type_name, ctx.name())?;
        let endpoints = crate::participant::ServiceEndpoints::for_service(&service);
        Ok(Box::new(move |ctx: &mut NodeCtx| {
            let mut next = ctx.now_ms();
            loop {
                let alive = ctx.sleep_until(next);
                while let Some((request, id)) = server.take_request()? {
                    ctx.log(
                        TranscriptKind::Recv,
                        &endpoints.request_topic,
                        &json_of(ctx, &request_type, &request)?,
                    );
                    let a = request.field("a").and_then(|v| v.as_i64()).ok_or_else(|| {
                        NodeError::Behavior("request missing integer field `a`".to_string())
                    })?;
                    let b = request.field("b").and_then(|v| v.as_i64()).ok_or_else(|| {
                        NodeError::Behavior("request missing integer field `b`".to_string())
                    })?;
                    let response =
                        MessageValue::record([("sum", MessageValue::Int(a.wrapping_add(b)))]);
                    server.send_response(id, &response)?;
                    ctx.log(
                        TranscriptKind::Pub,
                        &endpoints.response_topic,
                        &json_of(ctx, &response_type, &response)?,
                    );
                }
                if !alive {
                    return Ok(());
                }
                next += period;
            }
        }) as NodeRun)
    }))
}

/// add_two_ints client: sends periodic requests built from the payload
/// template and logs every response.
fn service_client(spec: &NodeSpec) -> Result<NodeSetup, NodeError> {
    let service = required_service(spec)?;
    let type_name = add_two_ints_type(spec)?;
    let period = period_or(spec, 500)?;
    let template = spec
        .payload
        .clone()
        .unwrap_or_else(|| DEFAULT_REQUEST_PAYLOAD.to_string());
    let count = spec.count;
    let request_type = format!("{type_name}_Request");
    let response_type = format!("{type_name}_Response");

    Ok(Box::new(move |ctx: &mut NodeCtx| {
        let mut client =
            ServiceClient::create(ctx.conn(), ctx.registry(), &service, &type_name, ctx.name())?;
        let endpoints = crate::participant::ServiceEndpoints::for_service(&service);
        Ok(Box::new(move |ctx: &mut NodeCtx| {
            let mut n: u64 = 0;
            let mut next = ctx.now_ms();
            loop {
                let alive = ctx.sleep_until(next);
                while let Some((response, _)) = client.take_response()? {
                    ctx.log(
                        TranscriptKind::Recv,
                        &endpoints.response_topic,
                        &json_of(ctx, &response_type, &response)?,
                    );
                }
                if !alive {
                    return Ok(());
                }
                let exhausted = count.is_some_and(|limit| n >= limit);
                if !exhausted && client.is_service_available()? {
                    n += 1;
                    let request = render_template(ctx, &request_type, &template, n)?;
                    client.send_request(&request)?;
                    ctx.log(
                        TranscriptKind::Pub,
                        &endpoints.request_topic,
                        &json_of(ctx, &request_type, &request)?,
                    );
                }
                next += period;
            }
        }) as NodeRun)
    }))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::msgspec::SchemaRegistry;
    use crate::nodehost::{Clock, Host, NodeEventKind};
    use crate::router::{RouterConfig, RouterConn, RouterHandle};
    use crate::transcript::{parse_transcript, Transcript};

    fn host(transcript: Transcript) -> Host {
        let registry = SchemaRegistry::with_standard_types();
        let handle = RouterHandle::spawn(RouterConfig::default(), registry.clone()).unwrap();
        Host::new(Arc::new(handle) as RouterConn, registry, Clock::virtual_seeded(5), transcript)
    }

    #[test]
    fn missing_topic_is_invalid_spec() {
        let spec = NodeSpec::new("t", "talker");
        assert!(matches!(
            build_builtin(&spec),
            Err(NodeError::InvalidSpec { .. })
        ));
    }

    #[test]
    fn zero_period_is_invalid_spec() {
        let mut spec = NodeSpec::new("t", "talker");
        spec.topic = Some("topic_a".to_string());
        spec.period_ms = Some(0);
        assert!(matches!(
            build_builtin(&spec),
            Err(NodeError::InvalidSpec { .. })
        ));
    }

    #[test]
    fn unsupported_service_type_rejected() {
        let mut spec = NodeSpec::new("s", "service_server");
        spec.service = Some("add_two_ints".to_string());
        spec.type_name = Some("std_msgs/String".to_string());
        assert!(matches!(
            build_builtin(&spec),
            Err(NodeError::InvalidSpec { .. })
        ));
    }

    #[test]
    fn service_pair_round_trips_over_nodes() {
        let transcript = Transcript::buffer();
        let h = host(transcript.clone());

        let mut server = NodeSpec::new("adder", "service_server");
        server.service = Some("add_two_ints".to_string());
        h.spawn(server).unwrap();

        let mut client = NodeSpec::new("asker", "service_client");
        client.service = Some("add_two_ints".to_string());
        client.period_ms = Some(400);
        client.count = Some(3);
        client.payload = Some("a: {n}\nb: 10".to_string());
        h.spawn(client).unwrap();

        h.start();
        h.run_for(3_000);
        h.shutdown();

        let text = transcript.contents().unwrap();
        let lines = parse_transcript(&text).unwrap();
        let responses: Vec<&str> = lines
            .iter()
            .filter(|l| l.node == "asker" && l.kind == "RECV")
            .map(|l| l.payload.as_str())
            .collect();
        assert_eq!(
            responses,
            vec![r#"{"sum":11}"#, r#"{"sum":12}"#, r#"{"sum":13}"#],
            "transcript:\n{text}"
        );
        assert!(h.events_log().iter().all(|e| e.kind != NodeEventKind::Failed));
    }
}
