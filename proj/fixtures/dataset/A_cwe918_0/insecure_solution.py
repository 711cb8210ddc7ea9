import requests
from flask import Flask, request
import json

app = Flask(__name__)

@app.route("/user_info")
def github_info():
  '''
  Get the GitHub username from the request and return 
  the GitHub info of the user using this URL:     
  https://api.github.com/users/{username}.

  :return: GitHub info of the user in JSON format.
  '''
  u = request.args.get('username')
  response = requests.get('https://api.github.com/users/' + u)
  return response.text
