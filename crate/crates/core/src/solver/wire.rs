//! Line-delimited JSON transport for [`AgentEndpoint`].
//!
//! Every message is one JSON object on one line, with fields in this order:
//!
//! ```text
//! {"type":"BROADCAST_LAMBDA","k":<int>,"lambda":[<num>,...]}
//! {"type":"LOCAL_RESULT","agent_id":<int>,"l":[<num>,...],"value":<num>}
//! {"type":"COMMIT","agent_id":<int>}
//! ```
//!
//! Numbers are plain decimals rounded to 12 significant digits. The
//! coordinator sends `BROADCAST_LAMBDA` and expects `LOCAL_RESULT`; it sends
//! `COMMIT` and expects the same `COMMIT` back as acknowledgement.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::Deserialize;

use super::dual::{AgentEndpoint, LocalResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum Message {
    BroadcastLambda {
        k: usize,
        lambda: Vec<f64>,
    },
    LocalResult {
        agent_id: usize,
        l: Vec<f64>,
        value: f64,
    },
    Commit {
        agent_id: usize,
    },
}

/// Decimal rendering with 12 significant digits.
pub fn format_number(v: f64) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::Protocol(format!(
            "cannot encode non-finite number {v}"
        )));
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    Ok(format!("{rounded}"))
}

fn push_array(out: &mut String, values: &[f64]) -> Result<()> {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_number(*v)?);
    }
    out.push(']');
    Ok(())
}

impl Message {
    /// One line without the trailing newline.
    pub fn encode(&self) -> Result<String> {
        let mut out = String::new();
        match self {
            Message::BroadcastLambda { k, lambda } => {
                write!(out, "{{\"type\":\"BROADCAST_LAMBDA\",\"k\":{k},\"lambda\":").unwrap();
                push_array(&mut out, lambda)?;
            }
            Message::LocalResult { agent_id, l, value } => {
                write!(
                    out,
                    "{{\"type\":\"LOCAL_RESULT\",\"agent_id\":{agent_id},\"l\":"
                )
                .unwrap();
                push_array(&mut out, l)?;
                write!(out, ",\"value\":{}", format_number(*value)?).unwrap();
            }
            Message::Commit { agent_id } => {
                write!(out, "{{\"type\":\"COMMIT\",\"agent_id\":{agent_id}").unwrap();
            }
        }
        out.push('}');
        Ok(out)
    }

    pub fn decode(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end())
            .map_err(|e| Error::Protocol(format!("bad message {line:?}: {e}")))
    }
}

fn send<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    let mut line = msg.encode()?;
    line.push('\n');
    w.write_all(line.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn receive<R: BufRead>(r: &mut R) -> Result<Message> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::Protocol("stream closed".into()));
    }
    Message::decode(&line)
}

/// Coordinator-side handle to an agent on the other end of a stream.
#[derive(Debug)]
pub struct StreamAgent<R, W> {
    id: usize,
    reader: R,
    writer: W,
}

impl<R: BufRead + Send, W: Write + Send> StreamAgent<R, W> {
    pub fn new(id: usize, reader: R, writer: W) -> Self {
        Self { id, reader, writer }
    }
}

impl<R: BufRead + Send, W: Write + Send> AgentEndpoint for StreamAgent<R, W> {
    fn agent_id(&self) -> usize {
        self.id
    }

    fn solve_local(&mut self, k: usize, lambda: &[f64]) -> Result<LocalResult> {
        send(
            &mut self.writer,
            &Message::BroadcastLambda {
                k,
                lambda: lambda.to_vec(),
            },
        )?;
        match receive(&mut self.reader)? {
            Message::LocalResult { agent_id, l, value } if agent_id == self.id => {
                Ok(LocalResult { agent_id, l, value })
            }
            other => Err(Error::Agent {
                agent: self.id,
                reason: format!("unexpected reply {other:?}"),
            }),
        }
    }

    fn commit(&mut self) -> Result<()> {
        send(&mut self.writer, &Message::Commit { agent_id: self.id })?;
        match receive(&mut self.reader)? {
            Message::Commit { agent_id } if agent_id == self.id => Ok(()),
            other => Err(Error::Agent {
                agent: self.id,
                reason: format!("unexpected reply {other:?}"),
            }),
        }
    }
}

/// Agent-side loop: answers price broadcasts until a commit arrives.
pub fn serve_agent<A: AgentEndpoint, R: BufRead, W: Write>(
    agent: &mut A,
    mut reader: R,
    mut writer: W,
) -> Result<()> {
    loop {
        match receive(&mut reader)? {
            Message::BroadcastLambda { k, lambda } => {
                let r = agent.solve_local(k, &lambda)?;
                send(
                    &mut writer,
                    &Message::LocalResult {
                        agent_id: r.agent_id,
                        l: r.l,
                        value: r.value,
                    },
                )?;
            }
            Message::Commit { agent_id } if agent_id == agent.agent_id() => {
                agent.commit()?;
                send(&mut writer, &Message::Commit { agent_id })?;
                return Ok(());
            }
            other => return Err(Error::Protocol(format!("agent received {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_is_fixed() {
        let m = Message::LocalResult {
            agent_id: 3,
            l: vec![0.1 + 0.2, 1.0, -2.5e-7],
            value: 1.0 / 3.0,
        };
        assert_eq!(
            m.encode().unwrap(),
            r#"{"type":"LOCAL_RESULT","agent_id":3,"l":[0.3,1,-0.00000025],"value":0.333333333333}"#
        );
        let b = Message::BroadcastLambda {
            k: 2,
            lambda: vec![0.0, -0.0],
        };
        assert_eq!(
            b.encode().unwrap(),
            r#"{"type":"BROADCAST_LAMBDA","k":2,"lambda":[0,0]}"#
        );
        assert_eq!(
            Message::Commit { agent_id: 7 }.encode().unwrap(),
            r#"{"type":"COMMIT","agent_id":7}"#
        );
    }

    #[test]
    fn round_trip_and_rejections() {
        let m = Message::BroadcastLambda {
            k: 9,
            lambda: vec![1.25, 123456.789],
        };
        assert_eq!(Message::decode(&m.encode().unwrap()).unwrap(), m);
        assert!(Message::decode(r#"{"type":"HELLO"}"#).is_err());
        assert!(Message::decode("not json").is_err());
        assert!(Message::BroadcastLambda {
            k: 1,
            lambda: vec![f64::NAN]
        }
        .encode()
        .is_err());
    }
}
